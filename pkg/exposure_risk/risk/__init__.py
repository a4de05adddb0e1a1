"""Risk scoring, its probabilistic model and parameter inference."""
