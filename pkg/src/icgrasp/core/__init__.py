"""Settings, run configs, errors, logging, histories and on-disk formats."""
