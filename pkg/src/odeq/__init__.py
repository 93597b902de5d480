"""Classical simulator and validation harness for single-ancilla linear ODE solving."""
