"""Posterior sampling for pure exploration in episodic tabular MDPs."""
