//! wasm-bindgen surface for the browser demo.
