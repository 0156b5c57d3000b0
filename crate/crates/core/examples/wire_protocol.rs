//! The line protocol spoken by detector adapters, served here by the
//! planted mock backend.

use std::io::Cursor;
use std::sync::Arc;

use modbias::gateway::protocol::{crop_ref, masked_ref, render_text_prompt, ImageRef};
use modbias::gateway::{Category, DetectorInput, Request};
use modbias::model::BiasClass;
use modbias::synthetic::{make_planted_dataset, serve_lines, PlantedWorld};

fn main() {
    let (manifest, _) = make_planted_dataset(3, &[(BiasClass::UniImage, 1.0)], 1).unwrap();
    let sample = &manifest.samples[0];
    let image = sample.image_ref.clone().unwrap();
    let text = sample.text.clone().unwrap();

    let text_only = DetectorInput::text_only(text.clone());
    let requests = [
        Request::Predict { sample_id: sample.id.clone(), image: text_only.image_field(), text: text_only.text_field() },
        Request::Predict { sample_id: sample.id.clone(), image: crop_ref(&image, &[0.1, 0.2, 0.6, 0.9]), text: "__PAD__".into() },
        Request::ExtractCoreText { text: text.clone() },
    ];
    let world = Arc::new(PlantedWorld::from_manifest(&manifest, 1).unwrap());
    for (request, category) in requests.iter().zip([Category::TextOnly, Category::ImageOnly, Category::TextExtractor]) {
        let line = request.to_line() + "\n";
        let mut reply = Vec::new();
        serve_lines(&world.backend(category), Cursor::new(line.as_bytes()), &mut reply).unwrap();
        print!("-> {line}<- {}", String::from_utf8_lossy(&reply));
    }

    println!("{:?}", ImageRef::parse(&masked_ref(&image, &[0.1, 0.2, 0.6, 0.9])));
    println!("{}", render_text_prompt(&text));
}
