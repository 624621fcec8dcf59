"""jackflow: Jack-polynomial particle dynamics, their diffusive limits
(beta-Dyson and multilevel interlaced Brownian motions), and a statistical
verification harness for the identities and convergence statements that
connect them."""

__version__ = "0.1.0"
