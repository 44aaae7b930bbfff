"""Command line, configuration, and report emission."""
