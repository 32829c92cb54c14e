//! HTTP/JSON service for driving a planned follow-up one visit at a time.
//!
//! | method | path | body | response |
//! |---|---|---|---|
//! | POST | `/sessions` | [`CreateRequest`] | 201 [`StepResponse`] |
//! | POST | `/sessions/{id}/decisions` | [`DecisionInput`] | [`CommitAck`] |
//! | POST | `/sessions/{id}/observations` | [`ObservationInput`] | [`StepResponse`] |
//! | GET | `/sessions` | | [`SessionSummary`] list |
//! | GET | `/sessions/{id}` | | [`SessionView`] |
//!
//! Malformed bodies give 400, unknown ids 404 and requests out of phase 409.

mod api;
mod error;
mod session;
mod store;

pub use api::{router, serve, AppState};
pub use error::ServiceError;
pub use session::{
    BeliefView, CommitAck, CreateRequest, DecisionInput, DecisionValue, EndReason, Event,
    HistogramBin, ObservationInput, PatientSpec, Phase, Recommendation, Session, SessionSummary,
    SessionView, StepResponse,
};
pub use store::{LogHeader, Store, StoredSession, LOG_FORMAT};
