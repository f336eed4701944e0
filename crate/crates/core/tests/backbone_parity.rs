//! Forward-pass parity for the full-size backbones.
//!
//! scripts/export_backbone_reference.py writes, per architecture, a set of
//! seeded random weights plus the feature vectors an independent framework
//! implementation produces for a fixed input. These tests load the same
//! weights through the normal pretrained-weights path, run the same input,
//! and compare features elementwise. When the reference files are absent
//! (they are generated artifacts, not checked in) the tests pass trivially
//! after printing how to create them.

use std::path::{Path, PathBuf};

use candle_core::{Device, Tensor};
use safetensors::SafeTensors;
use tss_core::model::{build_model, BackboneName, BackboneSpec, HeadSpec, WeightsInit};

// Observed on CPU: max |diff| 7e-6 (densenet169), 9e-5 (inceptionv3) at
// feature scale ~0.4. The bounds leave room for summation-order noise while
// still catching any structural mistake, which shifts features by O(0.1).
const MAX_ABS_TOLERANCE: f64 = 5e-4;
const MEAN_ABS_TOLERANCE: f64 = 5e-5;

fn reference_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../weights/reference")
}

fn load_f32(st: &SafeTensors, name: &str, device: &Device) -> Tensor {
    let view = st.tensor(name).expect(name);
    assert_eq!(view.dtype(), safetensors::Dtype::F32, "{name} dtype");
    let data: Vec<f32> = view
        .data()
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Tensor::from_vec(data, view.shape(), device).unwrap()
}

fn check_parity(name: BackboneName) {
    let dir = reference_dir();
    let io_path = dir.join(format!("{}_io.safetensors", name.as_str()));
    if !io_path.is_file() {
        eprintln!(
            "skipping {} parity: {} not found; \
             run scripts/export_backbone_reference.py to generate it",
            name.as_str(),
            io_path.display()
        );
        return;
    }

    let device = Device::Cpu;
    let spec = BackboneSpec::new(name, WeightsInit::ImagenetPretrained).unwrap();
    let model = build_model(spec, HeadSpec::default(), 0, Some(&dir), &device).unwrap();

    let bytes = std::fs::read(&io_path).unwrap();
    let st = SafeTensors::deserialize(&bytes).unwrap();
    let input = load_f32(&st, "input", &device);
    let expected = load_f32(&st, "features", &device);

    let got = model.features(&input).unwrap();
    assert_eq!(got.dims(), expected.dims(), "feature shape");

    let diff = (&got - &expected).unwrap().abs().unwrap();
    let max_abs = diff.max_all().unwrap().to_scalar::<f32>().unwrap() as f64;
    let mean_abs = diff.mean_all().unwrap().to_scalar::<f32>().unwrap() as f64;
    let scale = expected
        .abs()
        .unwrap()
        .mean_all()
        .unwrap()
        .to_scalar::<f32>()
        .unwrap();
    eprintln!(
        "{}: max |diff| {max_abs:.3e}, mean |diff| {mean_abs:.3e}, \
         feature scale {scale:.3}",
        name.as_str()
    );
    assert!(
        max_abs < MAX_ABS_TOLERANCE,
        "max |diff| {max_abs:.3e} exceeds {MAX_ABS_TOLERANCE:.1e}"
    );
    assert!(
        mean_abs < MEAN_ABS_TOLERANCE,
        "mean |diff| {mean_abs:.3e} exceeds {MEAN_ABS_TOLERANCE:.1e}"
    );
}

#[test]
fn densenet169_matches_reference_forward() {
    check_parity(BackboneName::Densenet169);
}

#[test]
fn inceptionv3_matches_reference_forward() {
    check_parity(BackboneName::Inceptionv3);
}
