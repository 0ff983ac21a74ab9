use std::time::Duration;

use wayfind_client::Client;
use wayfind_core::api::*;
use wayfind_core::describer::DescriberConfig;
use wayfind_core::distance::{Direction, Heading, RangedObject};
use wayfind_core::perception::{BBox, Detection, DetectionScript};
use wayfind_core::pipeline::PipelineConfig;
use wayfind_core::quantization::{LayerSpec, Tensor};
use wayfind_core::tts::Prosody;
use wayfind_server::stubs::{stub_detector_router, StubTts};
use wayfind_server::{router, spawn, Runs, Spawned};

async fn service() -> (Spawned, Client) {
    let s = spawn("127.0.0.1:0", router(Runs::default())).await.unwrap();
    let c = Client::new(&s.url());
    (s, c)
}

#[tokio::test(flavor = "multi_thread")]
async fn health_and_distance() {
    let (_s, c) = service().await;
    assert_eq!(c.health().await.unwrap().status, "ok");

    let est = c
        .estimate_distance(&EstimateRequest {
            bbox: BBox::new(10.0, 100.0, 110.0, 300.0),
            label: "person".into(),
            focal_length_px: 1000.0,
            image_width_px: 1280,
            image_height_px: 720,
            heights: None,
        })
        .await
        .unwrap();
    assert!((est.distance_m - 1.7 * 1000.0 / 200.0).abs() < 1e-12);
    assert_eq!(est.direction, Direction::Left);

    let err = c
        .estimate_distance(&EstimateRequest {
            bbox: BBox::new(10.0, 100.0, 110.0, 300.0),
            label: "giraffe".into(),
            focal_length_px: 1000.0,
            image_width_px: 1280,
            image_height_px: 720,
            heights: None,
        })
        .await
        .unwrap_err();
    assert_eq!(err.kind(), Some("UnknownClass"));

    let rec = c
        .calibrate(&CalibrateRequest {
            known_height_m: 1.7,
            known_distance_m: 8.5,
            bbox: BBox::new(0.0, 100.0, 50.0, 300.0),
        })
        .await
        .unwrap();
    assert!((rec.focal_length_px - 1000.0).abs() < 1e-9);
}

#[tokio::test(flavor = "multi_thread")]
async fn quantization_endpoints() {
    let (_s, c) = service().await;
    let q = c
        .quantize(&QuantizeRequest {
            tensor: Tensor::vector(vec![0.7, -0.35, 0.0, 0.1]),
            bit_width: 4,
            axis: None,
        })
        .await
        .unwrap();
    assert_eq!(q.quantized.values, vec![7, -4, 0, 1]);
    assert!(q.max_abs_error <= 0.05 + 1e-12);

    let err = c
        .quantize(&QuantizeRequest {
            tensor: Tensor::vector(vec![1.0]),
            bit_width: 1,
            axis: None,
        })
        .await
        .unwrap_err();
    assert_eq!(err.kind(), Some("BitWidthTooSmall"));

    let report = c
        .size_report(&SizeReportRequest {
            layers: vec![LayerSpec {
                name: "w".into(),
                element_count: 1000,
                source_bits: 32,
                scale_count: 1,
            }],
            bit_width: 4,
        })
        .await
        .unwrap();
    assert_eq!(report.total_before, 4000);
    assert_eq!(report.total_after, 504);
}

#[tokio::test(flavor = "multi_thread")]
async fn early_stop_and_describe() {
    let (_s, c) = service().await;
    let r = c
        .early_stop(&EarlyStopRequest {
            losses: vec![1.0, 0.9, 0.95, 0.96, 0.97],
            patience: 2,
            min_delta: 1e-9,
        })
        .await
        .unwrap();
    assert_eq!(r.stop_index, Some(4));

    let person = |label: &str, x: f64| RangedObject {
        detection: Detection::new(label, 0.9, BBox::new(x, 0.0, x + 40.0, 300.0)),
        distance_m: 1.36,
        direction: Direction::Center,
        heading: Heading::Toward,
    };
    let mut objects: Vec<_> = (0..4).map(|i| person("woman", 600.0 + f64::from(i))).collect();
    objects.push(person("man", 620.0));
    let d = c
        .describe(&DescribeRequest {
            objects,
            config: DescriberConfig::default(),
        })
        .await
        .unwrap();
    assert_eq!(
        d.description.text,
        "4 women and 1 man, at 1.36 meters away, are headed towards you."
    );
    assert_eq!(
        d.utterance,
        "four women and one man, at one point three six meters away, are headed towards you."
    );
}

#[tokio::test(flavor = "multi_thread")]
async fn speech_formatting() {
    let (_s, c) = service().await;
    assert_eq!(c.normalize("at 10 meters").await.unwrap(), "at ten meters");
    assert_eq!(c.normalize(" ").await.unwrap_err().kind(), Some("EmptyText"));
    let err = c
        .speech_request(&SpeechRequest {
            text: "hello".into(),
            speaker_id: 34,
            prosody: Prosody::default(),
        })
        .await
        .unwrap_err();
    assert_eq!(err.kind(), Some("SpeakerOutOfRange"));
    let body = c
        .speech_request(&SpeechRequest {
            text: "hello".into(),
            speaker_id: 3,
            prosody: Prosody::default(),
        })
        .await
        .unwrap();
    assert_eq!(
        body,
        r#"{"text": "hello", "speaker_id": 3, "prosody": {"pitch": 0.0, "rate": 1.0, "amplitude": 1.0}}"#
    );
}

async fn wait_finished(c: &Client, id: &str) -> RunStatus {
    for _ in 0..500 {
        let st = c.run_status(id, 0).await.unwrap();
        if st.state != RunState::Running {
            return st;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    panic!("run {id} did not finish");
}

#[tokio::test(flavor = "multi_thread")]
async fn run_with_stub_backends() {
    let (_s, c) = service().await;
    let mut script = DetectionScript::new();
    for id in [0, 1, 2] {
        script
            .insert(
                id,
                vec![Detection::new("car", 0.9, BBox::new(20.0, 200.0, 180.0, 300.0))],
            )
            .unwrap();
    }
    let detector = spawn("127.0.0.1:0", stub_detector_router(script)).await.unwrap();
    let tts = StubTts::new(1);
    let tts_server = spawn("127.0.0.1:0", tts.router()).await.unwrap();

    let mut config = PipelineConfig::default();
    config.perception.backend_url = Some(detector.url());
    config.tts.endpoint = Some(tts_server.url());
    let id = c
        .start_run(&StartRunRequest {
            config,
            source: "synthetic".into(),
            simulated_clock: true,
        })
        .await
        .unwrap();
    let st = wait_finished(&c, &id).await;
    assert_eq!(st.state, RunState::Finished, "{:?}", st.error);
    let summary = st.summary.unwrap();
    assert_eq!(summary.cycles as usize, st.records.len());
    assert!(summary.transcript[0].starts_with("one car, at"));
    let received = tts.received();
    assert!(!received.is_empty());
    assert!(received[0].starts_with(r#"{"text": "one car, at"#));
    assert_eq!(summary.tts.unwrap().sent as usize, received.len());

    // offsets return only newer records
    let tail = c.run_status(&id, st.next_offset).await.unwrap();
    assert!(tail.records.is_empty());
}

#[tokio::test(flavor = "multi_thread")]
async fn run_initialization_failures() {
    let (_s, c) = service().await;
    let mut config = PipelineConfig::default();
    config.tts.dry_run = true;
    config.perception.backend_url = Some("http://127.0.0.1:9".into());
    let err = c
        .start_run(&StartRunRequest {
            config: config.clone(),
            source: "synthetic".into(),
            simulated_clock: true,
        })
        .await
        .unwrap_err();
    assert_eq!(err.kind(), Some("InitializationError"));

    config.tts.speaker_id = 40;
    let err = c
        .start_run(&StartRunRequest {
            config,
            source: "synthetic".into(),
            simulated_clock: true,
        })
        .await
        .unwrap_err();
    match err {
        wayfind_client::ClientError::Api { body, .. } => {
            assert_eq!(body.kind, "SchemaViolation");
            assert_eq!(body.key.as_deref(), Some("tts.speaker_id"));
        }
        other => panic!("{other}"),
    }

    assert_eq!(c.run_status("nope", 0).await.unwrap_err().kind(), Some("NotFound"));
}

#[tokio::test(flavor = "multi_thread")]
async fn stopping_a_wall_clock_run() {
    let (_s, c) = service().await;
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("script.json"), "{}").unwrap();
    let mut config = PipelineConfig::default();
    config.tts.dry_run = true;
    config.perception.mock_script = Some(dir.path().join("script.json"));
    config.source.synthetic_frames = 10_000;
    let id = c
        .start_run(&StartRunRequest {
            config,
            source: "synthetic".into(),
            simulated_clock: false,
        })
        .await
        .unwrap();
    tokio::time::sleep(Duration::from_millis(1300)).await;
    c.stop_run(&id).await.unwrap();
    let st = wait_finished(&c, &id).await;
    assert_eq!(st.state, RunState::Finished);
    assert_eq!(st.summary.unwrap().stop, wayfind_core::pipeline::StopReason::Shutdown);
}
