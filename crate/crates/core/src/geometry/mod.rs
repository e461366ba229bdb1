//! Meshes, the procedural head model, triangle frames and UV bindings.

mod binding;
mod frame;
mod head;
mod mesh;

pub use binding::{binding_frames, binding_world_origin, build_bindings_from_uv, Binding};
pub use frame::{compute_triangle_frame, face_frames, TriangleFrame, MIN_FACE_AREA};
pub use head::{
    hair_region, hairline_v, sample_identity, HeadIdentity, HeadModelConfig, HeadTexture,
    ToyHeadModel,
};
pub use mesh::{Mesh, Rigid, Texture};
