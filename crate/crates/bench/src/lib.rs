//! Criterion benchmarks for the geonet kernels; see `benches/`.
