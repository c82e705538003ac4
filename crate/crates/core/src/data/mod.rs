//! Tabular data: schema, CSV ingestion, normalization, splitting and the
//! Simple-BN synthetic generator.

mod csv_io;
mod dataset;
mod normalize;
mod schema;
mod simple_bn;

pub use csv_io::{load_csv, read_csv, save_csv, write_csv};
pub use dataset::{Dataset, Instance, Split};
pub use normalize::{FeatureRange, Normalizer};
pub use schema::{Feature, FeatureConstraint, FeatureKind, FeatureSchema, DEFAULT_LABEL};
pub use simple_bn::{gen_simple_bn, simple_bn_schema, SimpleBnParams, MINORITY_WARNING};
