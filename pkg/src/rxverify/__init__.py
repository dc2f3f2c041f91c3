"""Link-level OFDM simulation with neural-receiver verification."""
