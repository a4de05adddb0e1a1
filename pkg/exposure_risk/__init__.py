"""
Exposure Risk

Contact-tracing risk scoring for proximity apps: per-event risk of
transmission, exposure notification with de-cascading on negative tests,
a probabilistic reading of the score and Bayesian estimation of its base
parameter.
"""

__version__ = "0.1.0"
