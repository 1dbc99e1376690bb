"""Liquid state machine with neuron-like and astrocyte-like spiking units."""
__version__ = "0.1.0"
