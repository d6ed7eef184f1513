"""voltelab commands package."""
