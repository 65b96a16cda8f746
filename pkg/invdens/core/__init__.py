"""Settings, logging, errors and random streams."""
