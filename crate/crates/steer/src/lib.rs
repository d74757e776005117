//! Steering service: serves repertoires and live sessions whose behavior can
//! be switched between simulation steps. Wire format in `PROTOCOL.md`.

pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{ClientMessage, ErrorCode, ErrorMessage, ServerMessage, PROTOCOL_VERSION};
pub use server::{load_archive_dir, router, serve, serve_until, AppState, LoadedArchive, ServerOptions};
pub use session::{Session, SessionOptions};
