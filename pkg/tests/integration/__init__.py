"""
Full-scale reproductions of the published cooling results.

These tests:
- Run at the production truncation (d=150, nbar=10) and full grids
- Take minutes each; the optimizer searches take longer
- Are excluded from the default pytest run

Run with:
    pytest tests/integration/ -v
"""
