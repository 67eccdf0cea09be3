"""The instance network."""
