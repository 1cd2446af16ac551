"""Surface helicity, harmonic bases, rotational transform and simple coil currents on tori."""
