"""Quotient-valued Ginzburg-Landau toolkit.

Submodules:
    quotient   - algebra of the plane modulo m-th roots of unity
    domain     - planar domains, boundary data, square-lattice grids
    renorm     - canonical harmonic maps, renormalized and core energies
    steiner    - Steiner networks with mod-m component constraints
    simulate   - sharp- and diffuse-interface lattice minimizers
    io         - plain-text snapshots, energy traces, forest files
    acceptance - numbered verification checks (`fracvortex verify`)
    cli        - command-line harness
"""

__version__ = "0.1.0"
