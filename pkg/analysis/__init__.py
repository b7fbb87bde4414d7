"""Numerical diagnostics for the hypotheses and conclusions of the graph results."""
