//! Surface remeshing by restricted Delaunay refinement.
//!
//! Rebuilds a closed 2-manifold triangle mesh into a high-quality restricted
//! Delaunay surface triangulation. Two refinement drivers share the same
//! machinery: a conventional circumcentre-based scheme (`dr`) and a
//! frontal scheme (`fd`) that places size-optimal off-centre vertices on
//! facets of the Voronoi diagram. A coarse tetrahedralisation of the
//! enclosed volume falls out as a by-product.

pub mod cli;
pub mod delaunay;
pub mod geom;
pub mod io;
pub mod metrics;
pub mod oracle;
pub mod refine;
pub mod restricted;
pub mod sizing;
pub mod synth;

pub use geom::{Ball3, Plane3, Point3, Vec3};

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate simplex: {0}")]
    DegenerateSimplex(&'static str),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
