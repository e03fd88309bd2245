"""SC/FDE MU-MIMO uplink link-level simulator."""
__version__ = "0.1.0"
