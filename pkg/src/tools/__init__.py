# Simulators and law objects
