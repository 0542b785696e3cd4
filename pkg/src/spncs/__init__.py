"""Networked-observer design and simulation for two-time-scale linear plants.

Subpackages by responsibility:

* ``numerics``  -- small dense linear algebra and RK4 (shared tolerances).
* ``model``     -- plant/observer error coordinates and derived blocks.
* ``protocols`` -- channel scheduling protocols and their certificates.
* ``design``    -- design LMIs, gain templates, derivative-free synthesis.
* ``bounds``    -- transmission-interval bounds and the constants pipeline.
* ``hybridsim`` -- event-driven closed-loop simulator and bound checking.
* ``cli``       -- the ``spncs`` command-line front end.
"""

__version__ = "0.1.0"
