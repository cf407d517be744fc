"""
dnnet-cli - train doubly nested networks and slice them into standalone sub-models
"""

__version__ = "0.3.0"
__author__ = "dnnet-cli contributors"
__description__ = "Train, slice and budget doubly nested convolutional networks from the terminal"
