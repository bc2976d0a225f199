#pragma once
#include <stdexcept>
#include <string>

namespace surfdist {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input file (OFF/PLY/CSV syntax, bad counts, bad header).
struct ParseError : Error {
    using Error::Error;
};

// Mesh fails the disk-topology contract (non-manifold, wrong boundary
// loop count, wrong Euler characteristic, inconsistent orientation).
struct TopologyError : Error {
    using Error::Error;
};

// Degenerate geometry: zero-area faces, duplicate vertices, zero-area mesh.
struct GeometryError : Error {
    using Error::Error;
};

// Numerical solver failure (singular system, flipped triangles after a
// flattening solve, infeasible transport instance).
struct SolverError : Error {
    using Error::Error;
};

} // namespace surfdist
