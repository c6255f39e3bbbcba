"""Dependencies shared by the command router.

This module provides factories the router calls instead of constructing
services itself, so tests can substitute their own instances.
"""

import logging

from ..services.lab_adapter import LabAdapter

# Set up logger
logger = logging.getLogger(__name__)


async def get_lab_adapter() -> LabAdapter:
    """Dependency to get an instance of LabAdapter.

    Returns:
        LabAdapter: A fresh adapter bound to the service modules.
    """
    return LabAdapter()
