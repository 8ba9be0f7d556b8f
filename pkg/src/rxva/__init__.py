"""Robust XVA pricing engine for CDS portfolios under counterparty
account-rate uncertainty."""

__version__ = "0.1.0"
