"""qtrsim: simulator and fitting toolchain for a transmon qubit coupled
to its readout resonator and a strain-tunable TLS defect.

Core layers: `operators` (dense matrix algebra), `model` (parameters and
Hamiltonians), `spectrum` (eigenvalue spectroscopy), `dynamics`
(Lindblad evolution and driven grids), `analytics` (closed-form
relations), `fitting` (peak extraction and least squares). The
`service` subpackage wraps everything in a FastAPI app; `cli` is a thin
client for it.
"""

__version__ = "0.1.0"
