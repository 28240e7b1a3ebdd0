from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from guiplay.actions import (
    KEY_NAMES,
    ActionParseError,
    Click,
    Finish,
    Hotkey,
    MalformedArguments,
    NoAction,
    OutOfBounds,
    Press,
    ScreenBounds,
    Scroll,
    Type,
    Wait,
    is_input,
    parse_action,
    render_action,
    validate_action,
)


def test_parse_examples():
    assert parse_action("click(10, 20)") == Click(10, 20)
    assert parse_action('I will type now: type("hi, there")') == Type("hi, there")
    assert parse_action("hotkey(ctrl, s)") == Hotkey(("ctrl", "s"))
    assert parse_action("PRESS(Space)") == Press("space")
    assert parse_action("scroll(5, 6, down)") == Scroll(5, 6, "down")
    assert parse_action("wait(0.5)") == Wait(0.5)
    assert parse_action("finish(success)") == Finish("success")


def test_first_call_wins():
    assert parse_action("press(up) then click(1, 2)") == Press("up")


def test_no_action():
    with pytest.raises(NoAction):
        parse_action("I am not sure what to do next.")


@pytest.mark.parametrize(
    "text",
    ["click(1)", "click(a, b)", "press(hyperkey)", "wait(0)", "wait(99)", "finish(maybe)", "scroll(1, 2, sideways)", "click(1, 2"],
)
def test_malformed(text):
    with pytest.raises(MalformedArguments):
        parse_action(text)


def test_single_quotes_and_escapes():
    assert parse_action(r"type('it\'s')") == Type("it's")
    assert parse_action('type("line\\nbreak")') == Type("line\nbreak")


def test_bounds():
    b = ScreenBounds(100, 50)
    validate_action(Click(99, 49), b)
    with pytest.raises(OutOfBounds):
        validate_action(Click(100, 0), b)
    with pytest.raises(OutOfBounds):
        validate_action(Scroll(-1, 0, "up"), b)
    validate_action(Type("x"), b)


def test_is_input():
    assert is_input(Click(0, 0))
    assert not is_input(Wait(1.0))
    assert not is_input(Finish("success"))


keys = st.sampled_from(sorted(KEY_NAMES))
actions = st.one_of(
    st.builds(Click, st.integers(-10_000, 10_000), st.integers(-10_000, 10_000)),
    st.builds(Type, st.text()),
    st.builds(Hotkey, st.lists(keys, min_size=2, max_size=4).map(tuple)),
    st.builds(Press, keys),
    st.builds(Scroll, st.integers(0, 5000), st.integers(0, 5000), st.sampled_from(["up", "down", "left", "right"])),
    st.builds(Wait, st.floats(min_value=1e-3, max_value=60.0, allow_nan=False)),
    st.builds(Finish, st.sampled_from(["success", "failure"])),
)


@given(actions)
def test_render_parse_roundtrip(a):
    assert parse_action(render_action(a)) == a


@given(st.text())
def test_parser_total_on_arbitrary_text(s):
    try:
        parse_action(s)
    except ActionParseError:
        pass
