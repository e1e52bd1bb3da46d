"""Seeded experiments: schedules, environments, baselines, runs and reports."""
