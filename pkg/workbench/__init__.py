"""
Soliton workbench Django project package.
"""
