use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;

pub type Result<T, E = CollectError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CollectError {
    #[error("unknown session")]
    UnknownSession,
    #[error("no images left in this session")]
    Exhausted,
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Invalid(String),
    #[error("no images configured")]
    EmptyPool,
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] scanlab_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CollectError {
    pub fn status(&self) -> StatusCode {
        match self {
            CollectError::UnknownSession => StatusCode::NOT_FOUND,
            CollectError::Exhausted => StatusCode::GONE,
            CollectError::Conflict(_) => StatusCode::CONFLICT,
            CollectError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            CollectError::EmptyPool => StatusCode::SERVICE_UNAVAILABLE,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for CollectError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() && status != StatusCode::SERVICE_UNAVAILABLE {
            log::error!("{self}");
        }
        (status, Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}
