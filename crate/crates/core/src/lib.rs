//! Experience memory for tool-using agents: a typed procedural knowledge
//! graph, hybrid retrieval over structural signatures, quality-gated
//! ingestion, maintenance, and a plan-retrieve-generate-iterate-ingest
//! orchestrator with a deterministic simulation harness.

pub mod embedding;
pub mod graph;
pub mod ids;
pub mod journal;
pub mod ontology;
pub mod resolver;
pub mod signature;
pub mod ingest;
pub mod maintenance;
pub mod memory;
pub mod retrieval;
pub mod metrics;
pub mod orchestrator;
pub mod sim;
