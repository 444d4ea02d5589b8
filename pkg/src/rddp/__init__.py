"""Risk-averse dual dynamic programming."""
