"""Rule-driven facilitator agents for group text discussions."""

__version__ = "0.1.0"
