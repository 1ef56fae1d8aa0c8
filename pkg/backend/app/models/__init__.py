# Domain types: trial data, kernels and decision rules
