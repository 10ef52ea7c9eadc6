"""Instance builders for k-SAT, hypergraph 2-coloring and graph coloring."""
