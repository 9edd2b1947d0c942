use std::ffi::{c_char, CString};
use std::process::Command;
use std::ptr;

use ipoc_vpc_ffi::*;

const SMALL_SPEC: &str = "seed=7\ncensoring.scale=2\ncensoring.shape=5\narms=active,placebo\ngroups=highrisk,lowrisk\n\
size.highrisk.active=60\nsize.highrisk.placebo=60\nsize.lowrisk.active=60\nsize.lowrisk.placebo=60\n\
hazard.highrisk.active=2.0\nhazard.highrisk.placebo=2.0\nhazard.lowrisk.active=0.05\nhazard.lowrisk.placebo=0.2\n";

fn last_error() -> String {
    unsafe {
        let need = ipoc_last_error_message(ptr::null_mut(), 0);
        let mut buf = vec![0u8; need];
        ipoc_last_error_message(buf.as_mut_ptr().cast::<c_char>(), need);
        String::from_utf8(buf[..need - 1].to_vec()).unwrap()
    }
}

fn small_study() -> (*mut IpocDataset, *mut IpocModels) {
    let spec = CString::new(SMALL_SPEC).unwrap();
    let mut data = ptr::null_mut();
    let mut models = ptr::null_mut();
    unsafe {
        assert_eq!(ipoc_dataset_generate(spec.as_ptr(), &mut data), IpocStatus::Ok);
        assert_eq!(ipoc_models_fit(data, &mut models), IpocStatus::Ok);
    }
    (data, models)
}

#[test]
fn generate_fit_and_query() {
    let (data, models) = small_study();
    unsafe {
        assert_eq!(ipoc_dataset_len(data), 240);
        assert_eq!(ipoc_models_dim(models), 3);
        let mut beta = [0.0; 3];
        assert_eq!(ipoc_models_beta(models, beta.as_mut_ptr(), 3), IpocStatus::Ok);
        assert!(beta[0] < 0.0, "low risk must lower the hazard: {beta:?}");
        let mut s = 0.0;
        let y = [0.0, 0.0, 0.0];
        assert_eq!(ipoc_models_cond_survival(models, y.as_ptr(), 3, 0.0, &mut s), IpocStatus::Ok);
        assert_eq!(s, 1.0);
        assert_eq!(ipoc_models_beta(models, beta.as_mut_ptr(), 2), IpocStatus::BufferTooSmall);
        ipoc_models_free(models);
        ipoc_dataset_free(data);
    }
}

#[test]
fn errors_report_status_and_message() {
    unsafe {
        let mut data = ptr::null_mut();
        assert_eq!(ipoc_dataset_generate(ptr::null(), ptr::null_mut()), IpocStatus::NullPointer);
        let bad = CString::new("bogus.key=1\n").unwrap();
        assert_eq!(ipoc_dataset_generate(bad.as_ptr(), &mut data), IpocStatus::Parse);
        assert!(last_error().contains("bogus.key"), "{}", last_error());
        assert!(data.is_null());

        let missing = CString::new("/nonexistent/dir/data.csv").unwrap();
        assert_eq!(ipoc_dataset_read_csv(missing.as_ptr(), &mut data), IpocStatus::Io);

        let (data, models) = small_study();
        let mut s = 0.0;
        let y = [0.0];
        assert_eq!(
            ipoc_models_cond_survival(models, y.as_ptr(), 1, 1.0, &mut s),
            IpocStatus::InvalidArgument
        );
        let opts = IpocVpcOptions {
            replicates: 0,
            ..ipoc_vpc_default_options()
        };
        let mut result = ptr::null_mut();
        assert_eq!(
            ipoc_vpc_run(data, models, IpocAlgorithm::Ipoc, &opts, ptr::null(), &mut result),
            IpocStatus::InvalidArgument
        );
        ipoc_models_free(models);
        ipoc_dataset_free(data);
        ipoc_dataset_free(ptr::null_mut());
    }
}

#[test]
fn vpc_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let (data, models) = small_study();
    unsafe {
        let model_path = CString::new(dir.path().join("m.json").to_str().unwrap()).unwrap();
        assert_eq!(ipoc_models_write_json(models, model_path.as_ptr()), IpocStatus::Ok);
        let mut reread = ptr::null_mut();
        assert_eq!(ipoc_models_read_json(model_path.as_ptr(), &mut reread), IpocStatus::Ok);

        let data_path = CString::new(dir.path().join("d.csv").to_str().unwrap()).unwrap();
        assert_eq!(ipoc_dataset_write_csv(data, data_path.as_ptr()), IpocStatus::Ok);
        let mut data2 = ptr::null_mut();
        assert_eq!(ipoc_dataset_read_csv(data_path.as_ptr(), &mut data2), IpocStatus::Ok);
        assert_eq!(ipoc_dataset_len(data2), 240);

        let opts = IpocVpcOptions {
            replicates: 20,
            grid_size: 25,
            ..ipoc_vpc_default_options()
        };
        let column = CString::new("placebo").unwrap();
        let run = |m: *const IpocModels, d: *const IpocDataset| {
            let mut r = ptr::null_mut();
            assert_eq!(
                ipoc_vpc_run(d, m, IpocAlgorithm::Marginal, &opts, column.as_ptr(), &mut r),
                IpocStatus::Ok,
                "{}",
                last_error()
            );
            r
        };
        let a = run(models, data);
        let b = run(reread, data2);
        assert_eq!(ipoc_vpc_stratum_count(a), 2);
        assert_eq!(ipoc_vpc_grid_len(a), 25);

        let mut label = [0 as c_char; 32];
        let need = ipoc_vpc_stratum_label(a, 1, label.as_mut_ptr(), label.len());
        let text: String = label[..need - 1].iter().map(|&c| c as u8 as char).collect();
        assert_eq!(text, "placebo=1");
        assert_eq!(ipoc_vpc_stratum_label(a, 9, ptr::null_mut(), 0), 0);

        for series in [IpocSeries::Mean, IpocSeries::Lower, IpocSeries::Upper, IpocSeries::Observed] {
            let mut va = vec![0.0; 25];
            let mut vb = vec![0.0; 25];
            assert_eq!(ipoc_vpc_series(a, 0, series, va.as_mut_ptr(), 25), IpocStatus::Ok);
            assert_eq!(ipoc_vpc_series(b, 0, series, vb.as_mut_ptr(), 25), IpocStatus::Ok);
            assert_eq!(va, vb, "{series:?} differs after file round trip");
            assert_eq!(va[0], 1.0);
        }
        let mut grid = vec![0.0; 25];
        assert_eq!(ipoc_vpc_grid(a, grid.as_mut_ptr(), 25), IpocStatus::Ok);
        assert_eq!(grid[0], 0.0);

        let csv_a = dir.path().join("a.csv");
        let csv_b = dir.path().join("b.csv");
        let pa = CString::new(csv_a.to_str().unwrap()).unwrap();
        let pb = CString::new(csv_b.to_str().unwrap()).unwrap();
        assert_eq!(ipoc_vpc_write_csv(a, pa.as_ptr()), IpocStatus::Ok);
        assert_eq!(ipoc_vpc_write_csv(b, pb.as_ptr()), IpocStatus::Ok);
        assert_eq!(std::fs::read(&csv_a).unwrap(), std::fs::read(&csv_b).unwrap());

        ipoc_vpc_free(a);
        ipoc_vpc_free(b);
        ipoc_models_free(reread);
        ipoc_dataset_free(data2);
        ipoc_models_free(models);
        ipoc_dataset_free(data);
    }
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/ipoc_vpc.h");
    let text = std::fs::read_to_string(header).unwrap();
    for name in ["ipoc_vpc_run", "ipoc_last_error_message", "IPOC_STATUS_OK", "typedef struct IpocDataset IpocDataset"] {
        assert!(text.contains(name), "header lacks {name}");
    }
    let Ok(status) = Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header]).status() else {
        eprintln!("no C compiler; skipped syntax check");
        return;
    };
    assert!(status.success());
}
