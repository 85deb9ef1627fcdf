# Commands package
from .fit import fit_cmd
from .risk import risk_cmd
from .amp import amp_cmd
from .experiment import experiment_cmd
from .diagnose import diagnose_cmd

__all__ = ['fit_cmd', 'risk_cmd', 'amp_cmd', 'experiment_cmd', 'diagnose_cmd']
