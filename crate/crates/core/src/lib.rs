// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Batch analytics over call detail records (CDRs) and airtime top-ups.
//!
//! The pipeline turns raw operator logs into socio-economic proxy indicators:
//!
//! * [`ingest`] parses and validates the CDR, top-up and tower files.
//! * [`synthgen`] produces synthetic datasets with planted ground truth.
//! * [`purchases`] computes per-user purchase statistics, the cumulative
//!   frequency curve of their coefficients of variation and per-tower
//!   mean / CV / Gini indicators.
//! * [`socialgraph`] builds the persistent-contact communication graph,
//!   filters service numbers and measures clustering against a
//!   degree-preserving null graph.
//! * [`communities`] runs Louvain with a resolution-scaled modularity.
//! * [`homophily`] measures wealth homophily inside communities against an
//!   attribute-shuffle baseline.
//! * [`exporter`] writes and re-reads every artifact.
//! * [`cli`] orchestrates the stages from a flat configuration.

pub mod cli;
pub mod communities;
pub mod error;
pub mod exporter;
pub mod homophily;
pub mod ingest;
pub mod purchases;
pub mod socialgraph;
pub mod synthgen;

pub use error::{Error, Result};
