"""Lane-aware long-term OFDMA resource allocation for maritime downlinks."""
