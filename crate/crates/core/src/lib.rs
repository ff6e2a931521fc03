//! Core of the sierra remote-monitoring platform: domain model, questionnaire
//! board, ingestion store with field encryption, visualization palette,
//! MLP toolkit, and authentication.

pub mod auth;
pub mod ml;
pub mod model;
pub mod quest;
pub mod store;
pub mod viz;
