"""Consistency-trained VQA on a synthetic macular-edema grading benchmark."""

__version__ = "0.1.0"
