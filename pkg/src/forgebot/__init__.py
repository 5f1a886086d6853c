"""Project-specific forge automation bot: reusable trigger-action components
plus five concrete workflows, testable end-to-end against a mock forge."""

__version__ = "0.1.0"
