"""Runnable gateway: wire frames, simulated network, negotiation, nodes and CLI."""
