//! Several detectors of one category answering as a single voter.

use std::sync::Arc;

use modbias::gateway::{
    Category, DetectorEndpoint, DetectorInput, Endpoint, Gateway, Request, ResponseCache, SharedBackend, TransportError,
};

fn fixed(logits: [f64; 2]) -> SharedBackend {
    Arc::new(move |line: &str| -> Result<String, TransportError> {
        let request: Request = serde_json::from_str(line).map_err(|e| TransportError::Protocol(e.to_string()))?;
        let pred = usize::from(logits[1] > logits[0]);
        println!("  {} <- {}", request.op_name(), line);
        Ok(format!("{{\"pred\":{pred},\"logits\":[{},{}]}}", logits[0], logits[1]))
    })
}

fn main() {
    let mut gateway = Gateway::new(ResponseCache::memory());
    for (id, logits) in [("image-det-a", [2.0, 0.5]), ("image-det-b", [0.1, 1.2]), ("image-det-c", [1.5, 0.2])] {
        gateway.register(Endpoint::new(DetectorEndpoint::in_process(id, Category::ImageOnly), fixed(logits))).unwrap();
    }
    let input = DetectorInput::image_only("images/42.jpg");
    let response = gateway.predict_group_input(Category::ImageOnly, "s42", &input).unwrap();
    println!("group prediction {} with mean logits {:?}", response.pred, response.logits);

    // repeated calls are answered from the cache
    gateway.predict_group_input(Category::ImageOnly, "s42", &input).unwrap();
    println!("second call served from cache");
}
