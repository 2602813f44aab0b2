"""Paradifferential control of small-amplitude water waves on flat tori.

Submodules are imported on demand so that the command line can set thread
limits before numpy loads.
"""
__version__ = "0.1.0"
