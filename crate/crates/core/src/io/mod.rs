//! Serialization: run-length masks, scene and annotation JSON, the `SDM1`
//! binary map format, PNM images and a COCOA-style annotation importer.
//!
//! RLE scans column-major (COCO convention); everything else is row-major.

mod annotations;
mod cocoa;
mod pnm;
mod rle;
mod scene;
mod sdm;

pub use annotations::{read_annotations, write_annotations, AnnotationSet};
pub use cocoa::{import_cocoa, CocoaImage, CocoaImport, SkippedRegion};
pub use pnm::{decode_pgm, encode_pgm, encode_pgm_mask, encode_ppm, Pgm};
pub use rle::{rle_decode, rle_encode, RleMask};
pub use scene::{read_scene, write_scene};
pub use sdm::{
    decode_sdm, encode_sdm, read_layering, read_semdist, write_layering, write_semdist, SdmData, SDM_MAGIC,
};

use crate::error::Error;

pub(crate) fn from_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, Error> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|err| {
        let path = err.path().to_string();
        Error::schema(path, err.into_inner().to_string())
    })
}
