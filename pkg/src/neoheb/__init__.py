"""Hardware-aware simulator of thermal neoHebbian synapses trained with e-prop."""

__version__ = "0.1.0"
