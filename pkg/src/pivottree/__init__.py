"""PivotTree: case-based decision trees over distances to selected training instances."""
