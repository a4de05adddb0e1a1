"""Exposure notification and de-cascading."""
