"""Benchmarking harness for conversational diagnostic AI.

The pipeline: a corpus of clinical vignettes drives simulated patient
conversations against a system under test, transcripts are judged with a
condition-graph rubric, unresolved cases go to human reviewers, and the
results aggregate into accuracy and efficiency tables.
"""

from __future__ import annotations

__version__ = "0.1.0"
