"""Instance matching and training losses."""
