"""
Initialization files for packages
"""
