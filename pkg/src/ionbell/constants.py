"""Physical constants (CODATA 2018) and isotope data used throughout the package."""

HBAR = 1.054571817e-34  # J s
E_CHARGE = 1.602176634e-19  # C
EPS0 = 8.8541878128e-12  # F / m
AMU = 1.66053906660e-27  # kg
M_ELECTRON_AMU = 5.48579909065e-4
MU_B_HZ_PER_T = 1.39962449361e10  # Bohr magneton / h

# singly-charged ion masses (neutral atomic mass minus one electron)
MASS_CA40 = 39.962590863 - M_ELECTRON_AMU
MASS_CA43 = 42.958766430 - M_ELECTRON_AMU

# qubit splittings at B ~ 0.2 mT
SPLITTING_CA40 = 5.4e6  # Zeeman ground-state qubit
SPLITTING_CA43 = 3.2256082864e9  # hyperfine 4S1/2 F=4,mF=4 <-> F=3,mF=3 (zero-field)

# low-field linear sensitivities d f_qubit / dB
SENSITIVITY_CA40 = 2.00225664 * MU_B_HZ_PER_T  # g_J mu_B / h
SENSITIVITY_CA43 = 1.75 * 2.00225664 * MU_B_HZ_PER_T / 2.0  # (g_F4 * 4 - g_F3 * 3) mu_B / h, g_F = +-g_J/8

RAMAN_WAVELENGTH = 397e-9  # m, 4S1/2 <-> 4P1/2
