"""Incubation and generation-time distributions."""
