"""Desk-scale security bench: data, experiments, reports and the CLI."""
