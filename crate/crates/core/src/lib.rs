pub mod areal;
pub mod criticism;
pub mod geojson;
pub mod geometry;
pub mod inla;
pub mod marginal;
pub mod mesh;
pub mod model;
pub mod oracle;
pub mod simulate;
pub mod sparse;
pub mod spde;
