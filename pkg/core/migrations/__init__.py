# Django migrations package for core app.

