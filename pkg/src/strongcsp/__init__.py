"""Strong CSP solving on almost low threshold-rank graphs."""
