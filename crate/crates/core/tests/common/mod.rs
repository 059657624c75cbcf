#![allow(dead_code)]

use std::sync::Arc;
use std::thread;

use axum::Router;
use vl_core::embedder::{Embedder, EmbedderConfig};
use vl_core::engine::{Engine, EngineConfig};
use vl_core::index::Document;
use vl_core::vecmath::UnitVector;

pub fn engine(dim: usize) -> Engine {
    Engine::new(Embedder::new(EmbedderConfig::mock(dim, 0)).unwrap(), EngineConfig::default()).unwrap()
}

/// e1..e3 on the axes, plus a tagged diagonal.
pub fn basis_engine() -> Engine {
    let e = engine(3);
    for i in 0..3 {
        e.index()
            .upsert(Document::new(format!("e{}", i + 1), format!("axis {}", i + 1), UnitVector::basis(3, i)))
            .unwrap();
    }
    e.index()
        .upsert(
            Document::new("diag", "diagonal", UnitVector::from_components(vec![1.0, 1.0, 0.0]).unwrap())
                .with_metadata("tags", "rustic,oak"),
        )
        .unwrap();
    e
}

/// Serves `app` on an ephemeral port from a background runtime; returns the
/// base URL. The server lives until the process exits.
pub fn spawn(app: Router) -> String {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    format!("http://{addr}")
}

pub fn serve_engine(engine: Engine) -> String {
    spawn(vl_core::service::router(Arc::new(engine)))
}
