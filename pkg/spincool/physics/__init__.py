"""Numerical core: Fock space, dynamics, postselection, protocol, optimizer, open system."""
