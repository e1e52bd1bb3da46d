"""Repository utility scripts."""
