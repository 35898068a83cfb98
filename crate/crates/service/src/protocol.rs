//! Viewer ↔ service messages. Control messages are JSON text; frames and
//! audio are binary. A binary frame is a little-endian header
//! `u64 frame_index, u32 width, u32 height, u8 format` followed by the
//! payload. Audio is a WAV announced by an `audio` event just before it.

use ico3d_core::{CameraModel, Pose};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};

pub const FRAME_HEADER_LEN: usize = 17;

/// Largest accepted viewport edge.
pub const MAX_VIEWPORT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ControlMessage {
    Chat { text: String },
    /// World-to-camera pose, 16 row-major floats.
    Camera { pose: Vec<f64>, intrinsics: Intrinsics },
    Event { kind: String, detail: String },
}

impl ControlMessage {
    pub fn event(kind: &str, detail: impl Into<String>) -> Self {
        ControlMessage::Event { kind: kind.into(), detail: detail.into() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("control messages serialize")
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| ServiceError::InvalidInput(format!("control message: {e}")))
    }

    pub fn camera(cam: &CameraModel) -> Self {
        ControlMessage::Camera {
            pose: cam.world_to_camera.to_row_major().to_vec(),
            intrinsics: Intrinsics { fx: cam.fx, fy: cam.fy, cx: cam.cx, cy: cam.cy, width: cam.width, height: cam.height },
        }
    }
}

/// Builds a validated camera from a camera message.
pub fn camera_from_message(pose: &[f64], k: &Intrinsics) -> Result<CameraModel> {
    if k.width == 0 || k.height == 0 || k.width > MAX_VIEWPORT || k.height > MAX_VIEWPORT {
        return Err(ServiceError::InvalidInput(format!("viewport {}x{} outside 1..={MAX_VIEWPORT}", k.width, k.height)));
    }
    let pose = Pose::from_row_major(pose)?;
    Ok(CameraModel::new(k.fx, k.fy, k.cx, k.cy, k.width, k.height, pose)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum FrameFormat {
    Rgb8 = 0,
    Png = 1,
}

impl FrameFormat {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Self::Rgb8),
            1 => Some(Self::Png),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameMessage {
    pub index: u64,
    pub width: u32,
    pub height: u32,
    pub format: FrameFormat,
    pub payload: Vec<u8>,
}

impl FrameMessage {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FRAME_HEADER_LEN + self.payload.len());
        out.extend_from_slice(&self.index.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.push(self.format as u8);
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < FRAME_HEADER_LEN {
            return Err(ServiceError::InvalidInput(format!("frame message of {} bytes is shorter than its header", bytes.len())));
        }
        let index = u64::from_le_bytes(bytes[0..8].try_into().unwrap());
        let width = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        let height = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
        let format = FrameFormat::from_u8(bytes[16]).ok_or_else(|| ServiceError::InvalidInput(format!("unknown frame format {}", bytes[16])))?;
        let payload = bytes[FRAME_HEADER_LEN..].to_vec();
        if format == FrameFormat::Rgb8 && payload.len() != width as usize * height as usize * 3 {
            return Err(ServiceError::InvalidInput(format!("RGB8 payload of {} bytes for {width}x{height}", payload.len())));
        }
        Ok(Self { index, width, height, format, payload })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn control_json_shapes() {
        let m = ControlMessage::parse(r#"{"type":"chat","text":"hi"}"#).unwrap();
        assert_eq!(m, ControlMessage::Chat { text: "hi".into() });
        let e = ControlMessage::event("reply", "You said: hi").to_json();
        assert_eq!(e, r#"{"type":"event","kind":"reply","detail":"You said: hi"}"#);
        assert!(ControlMessage::parse(r#"{"type":"dance"}"#).is_err());
    }

    #[test]
    fn camera_message_roundtrip() {
        let cam = CameraModel::centered(100.0, 64, 48, Pose::identity());
        let ControlMessage::Camera { pose, intrinsics } = ControlMessage::parse(&ControlMessage::camera(&cam).to_json()).unwrap() else { panic!() };
        assert_eq!(camera_from_message(&pose, &intrinsics).unwrap(), cam);
        assert!(camera_from_message(&pose[..15], &intrinsics).is_err());
        let huge = Intrinsics { width: 100_000, ..intrinsics };
        assert!(camera_from_message(&pose, &huge).is_err());
    }

    #[test]
    fn frame_header_layout() {
        let f = FrameMessage { index: 0x0102, width: 2, height: 1, format: FrameFormat::Rgb8, payload: vec![1, 2, 3, 4, 5, 6] };
        let b = f.encode();
        assert_eq!(&b[..8], &[2, 1, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&b[8..12], &[2, 0, 0, 0]);
        assert_eq!(b[16], 0);
        assert_eq!(FrameMessage::decode(&b).unwrap(), f);
        assert!(FrameMessage::decode(&b[..20]).is_err());
        assert!(FrameMessage::decode(&b[..10]).is_err());
    }
}
