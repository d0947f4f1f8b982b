"""flowsculpt: text-driven portrait editing on a desk-scale synthetic stack.

The package wires together a second-order rectified-flow solver with
inversion, a text-to-mask locator, and a structure-then-detail edit
controller around a small frozen transformer velocity model, and ships
the synthetic portrait data and metrics needed to exercise the whole
loop end to end on a CPU.
"""

__version__ = "0.1.0"
