"""Closed-loop GUI behavioral testing, @k metrics and agentic repair."""
