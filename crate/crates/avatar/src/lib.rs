//! Expression-driven head, sliding-window dynamic body, head-body composition
//! and procedural body animation.

pub mod anim;
pub mod avatar;
pub mod body;
pub mod compose;
pub mod head;
pub mod optim;
pub mod toy;

pub use avatar::{compose_avatar, Avatar, ComposeOptions, ComposeReport, HeadAsset, ViewHint};

pub(crate) fn invalid(msg: impl Into<String>) -> ico3d_core::Error {
    ico3d_core::Error::InvalidInput(msg.into())
}
