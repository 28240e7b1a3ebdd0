from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from guiplay.actions import Press
from guiplay.observer import Frame, diff
from guiplay.targets import FlappyApp, Game2048App, VirtualBackend, make_app
from guiplay.targets import flappy, game2048, render, rng
from guiplay.targets.game2048 import Board2048, new_board, slide, step_2048

from oracle2048 import move_row_left, oracle_move, random_grid

CORNER_MERGE = ((0, 0, 0, 0), (0, 0, 0, 0), (2, 0, 0, 2), (0, 0, 0, 4))


def test_oracle_sanity():
    assert move_row_left([2, 2, 2, 2]) == ([4, 4, 0, 0], 8)
    assert move_row_left([4, 0, 4, 8]) == ([8, 8, 0, 0], 8)


def test_corner_merge_right_move():
    grid, gained = slide(CORNER_MERGE, "right")
    assert grid[2][3] == 4 and grid[3][3] == 4
    assert sum(v for row in grid for v in row) == 8
    assert gained == 4
    assert (grid, gained) == oracle_move(CORNER_MERGE, "right")


def test_single_merge_rule():
    grid = ((2, 2, 2, 2),) + ((0,) * 4,) * 3
    moved, gained = slide(grid, "left")
    assert moved[0] == (4, 4, 0, 0)
    assert gained == 8


def test_moves_match_oracle():
    gen = np.random.default_rng(11)
    for _ in range(250):
        g = random_grid(gen)
        for d in game2048.MOVES:
            assert slide(g, d) == oracle_move(g, d)


def test_new_board_has_two_tiles_and_is_seeded():
    b = new_board(7)
    assert sum(1 for row in b.grid for v in row if v) == 2
    assert new_board(7) == b
    assert any(new_board(s).grid != b.grid for s in range(8, 20))


def test_noop_move_spawns_nothing():
    b = Board2048(((2, 0, 0, 0),) + ((0,) * 4,) * 3, 0, rng.seed_state(1))
    assert step_2048(b, "left") is b
    assert step_2048(b, "up") is b


def test_step_spawns_one_tile_and_scores():
    b = Board2048(CORNER_MERGE, 8, rng.seed_state(3))
    after = step_2048(b, "right")
    assert after.score == 12
    tiles = sum(1 for row in after.grid for v in row if v)
    assert tiles == 3


def test_finished_board_rejects_moves():
    full = ((2, 4, 2, 4), (4, 2, 4, 2), (2, 4, 2, 4), (4, 2, 4, 2))
    assert not game2048.can_move(full)
    with pytest.raises(ValueError):
        step_2048(Board2048(full, 0, 1, True), "left")


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.lists(st.sampled_from(game2048.MOVES), max_size=40))
def test_score_monotone_and_tiles_valid(seed, moves):
    b = new_board(seed)
    for d in moves:
        if b.over:
            break
        nb = step_2048(b, d)
        assert nb.score >= b.score
        for row in nb.grid:
            for v in row:
                assert v == 0 or (v & (v - 1)) == 0
        b = nb


def test_spawn_ratio_close_to_nine_to_one():
    state = rng.seed_state(5)
    empty = game2048.empty_grid()
    fours = 0
    for _ in range(4000):
        g, state = game2048.spawn(empty, state)
        fours += sum(row.count(4) for row in g)
    assert 0.08 < fours / 4000 < 0.12


def test_rng_is_deterministic_and_bounded():
    s = rng.seed_state(42)
    seq = []
    for _ in range(100):
        s, v = rng.next_below(s, 7)
        seq.append(v)
    s2 = rng.seed_state(42)
    again = []
    for _ in range(100):
        s2, v = rng.next_below(s2, 7)
        again.append(v)
    assert seq == again and set(seq) <= set(range(7))
    _, u = rng.next_float(s)
    assert 0.0 <= u < 1.0


def _overlapping_state():
    return flappy.FlappyState(0, 0, ((flappy.BIRD_X, 100, 230),))


def test_free_fall_velocity_grows_by_gravity():
    s = flappy.new_game(3)
    for _ in range(10):
        nxt = flappy.step_flappy(s, False)
        assert nxt.velocity == s.velocity + flappy.GRAVITY
        s = nxt
    assert flappy.step_flappy(s, True).velocity == flappy.FLAP_VELOCITY


def test_pipe_overlap_kills_only_in_ok_variant():
    s = _overlapping_state()
    assert not flappy.step_flappy(s, False, "flappy_ok").alive
    through = flappy.step_flappy(s, False, "flappy_passthrough")
    assert through.alive and flappy.touching_pipe(through)


def test_ground_kills_both_variants():
    s = flappy.FlappyState(flappy.GROUND_Y - flappy.BIRD_SIZE - 1, 5, ())
    for v in flappy.VARIANTS:
        assert not flappy.step_flappy(s, False, v).alive


def test_collide_hook_replaces_overlap_test():
    s = _overlapping_state()
    assert flappy.step_flappy(s, False, "flappy_ok", collide=lambda a, b: False).alive


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.booleans(), min_size=50, max_size=300))
def test_flappy_collision_invariants(seed, flaps):
    for variant in flappy.VARIANTS:
        s = flappy.new_game(seed)
        for f in flaps:
            prev_alive = s.alive
            s = flappy.step_flappy(s, f, variant)
            assert prev_alive or not s.alive
            if not prev_alive:
                break
            ground = s.y + flappy.BIRD_SIZE >= flappy.GROUND_Y
            if variant == "flappy_ok" and flappy.touching_pipe(s):
                assert not s.alive
            if variant == "flappy_passthrough":
                assert s.alive == (not ground)


def test_render_is_deterministic():
    b = new_board(9)
    assert np.array_equal(render.render_2048(b), render.render_2048(b))
    s = flappy.new_game(9)
    assert np.array_equal(render.render_flappy(s), render.render_flappy(s))


def _merge_pair(variant):
    before = Board2048(CORNER_MERGE, 8, rng.seed_state(1))
    after = Board2048(slide(CORNER_MERGE, "right")[0], 12, rng.seed_state(1))
    return render.render_2048(before, variant), render.render_2048(after, variant)


def test_white_on_white_hides_digits_but_not_tiles():
    a, b = _merge_pair("game2048_white_on_white")
    box = render.glyph_box(2, 3)
    assert not render.glyph_mask(b, box).any()
    assert np.array_equal(render.glyph_mask(a, box), render.glyph_mask(b, box))
    assert diff(Frame(a), Frame(b)).pixel_count > 0


def test_ok_variant_shows_new_digit_at_merged_cell():
    a, b = _merge_pair("game2048_ok")
    box = render.glyph_box(2, 3)
    assert not np.array_equal(render.glyph_mask(a, box), render.glyph_mask(b, box))


def test_low_contrast_digits_do_not_count_as_ink():
    board = Board2048(slide(CORNER_MERGE, "right")[0], 12, rng.seed_state(1))
    pale = render.render_2048(board, "game2048_ok", lambda v, tile: (255, 255, 255))
    box = render.glyph_box(2, 3)  # holds a 4 on a light tile
    assert not render.glyph_mask(pale, box).any()
    default = render.render_2048(board, "game2048_ok")
    assert render.glyph_mask(default, box).any()


def test_probe_has_no_side_effects():
    for tid in ("game2048_ok", "flappy_ok"):
        app = make_app(tid, 4)
        d = app.state_digest()
        app.probe()
        app.probe()
        assert app.state_digest() == d


def test_death_overlay_matches_alive_flag():
    app = FlappyApp(1)
    band = lambda: app.frame()[230, 5, :3].tolist()
    alive_colour = band()
    app.advance(200)
    assert not app.probe()["alive"]
    assert band() != alive_colour


def test_virtual_backend_wait_and_crash_logging():
    app = Game2048App(2)
    be = VirtualBackend(app)
    be.press("right")
    assert be.screen_size() == app.size
    app.handle = lambda cmd: 1 / 0
    with pytest.raises(ZeroDivisionError):
        be.press("left")
    assert be.exit_status == 1
    assert any("crash" in line for line in be.logs())

    fapp = FlappyApp(2)
    fb = VirtualBackend(fapp)
    fb.wait(0.5)  # 15 ticks, before a free-falling bird reaches the ground
    assert fapp.probe()["tick"] == fapp.ticks_per_second // 2


def test_unknown_target():
    with pytest.raises(ValueError):
        make_app("pong", 1)


def test_same_inputs_same_frames():
    def trace(seed):
        app = Game2048App(seed, "game2048_ok")
        frames = []
        for d in ("left", "up", "right", "down") * 3:
            app.handle(Press(d))
            frames.append(app.frame().tobytes())
        return frames

    assert trace(5) == trace(5)
