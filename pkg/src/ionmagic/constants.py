"""Physical constants and ion species."""

from dataclasses import dataclass

from scipy import constants as _c

HBAR = _c.hbar
MU_B = _c.physical_constants["Bohr magneton"][0]
MU_0 = _c.mu_0
EPS_0 = _c.epsilon_0
E_CHARGE = _c.e
AMU = _c.atomic_mass
M_ELECTRON = _c.m_e
TWO_PI = 2.0 * _c.pi

# Sustained chip current that the first-generation wires survive for >0.1 s.
# Advisory only; nothing in the package enforces it.
MAX_SUSTAINED_CHIP_CURRENT_A = 6.0


@dataclass(frozen=True)
class IonSpecies:
    """Singly-charged ion with a spin-1/2 ground state.

    Attributes
    ----------
    mass : float
        Ion mass in kg.
    charge : float
        Ion charge in C.
    lande_g : float
        Landé factor of the qubit levels.
    label : str
        Human readable name.
    """

    mass: float
    charge: float
    lande_g: float = 2.0
    label: str = ""

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass!r}")
        if not self.charge > 0:
            raise ValueError(f"charge must be positive, got {self.charge!r}")

    @classmethod
    def from_amu(cls, mass_amu, charge_e=1, lande_g=2.0, label=""):
        mass = mass_amu * AMU - charge_e * M_ELECTRON
        return cls(mass=mass, charge=charge_e * E_CHARGE, lande_g=lande_g, label=label)


CA40 = IonSpecies.from_amu(39.962590863, label="40Ca+")

_SPECIES = {"ca40": CA40, "40ca+": CA40, "ca40+": CA40}


def get_species(spec):
    """Resolve a species name, mapping or :class:`IonSpecies` instance."""
    if isinstance(spec, IonSpecies):
        return spec
    if isinstance(spec, str):
        try:
            return _SPECIES[spec.lower()]
        except KeyError:
            raise ValueError(
                f"unknown species {spec!r}; known: {sorted(set(_SPECIES))}"
            ) from None
    if isinstance(spec, dict):
        return IonSpecies.from_amu(
            spec["mass_amu"],
            charge_e=spec.get("charge_e", 1),
            lande_g=spec.get("lande_g", 2.0),
            label=spec.get("label", ""),
        )
    raise TypeError(f"cannot interpret {type(spec).__name__} as an ion species")
