"""Exporter contract: files must be bit-level valid for the counting
pipeline's loader, stay on the probability simplex, and round-trip values."""

import struct

import numpy as np
import pytest

import crowdlaf
from dafm_exporter import (
    ExportJob,
    InferenceFailure,
    IoFailure,
    MergeTable,
    MergeTableError,
    ModelLoadFailure,
    compute_attribute_map,
    export,
    load_model,
    parse_merge_table,
)
from dafm_exporter.cli import main


def run_export(model, merge_table, images, out_dir, **kwargs):
    job = ExportJob(
        images=tuple(str(p) for p in images),
        model=model.identifier,
        merge_table=merge_table,
        out_dir=str(out_dir),
        **kwargs,
    )
    return export(job, model)


class TestContractWithPrimaryLoader:
    def test_exports_load_with_zero_simplex_violations(self, model, merge_table, fixture_image, tmp_path):
        written = run_export(model, merge_table, [fixture_image], tmp_path)
        assert len(written) == 1
        amap = crowdlaf.load_map(written[0])  # raises SimplexViolation on any bad pixel
        assert amap.channels == merge_table.channels
        sums = amap.data.sum(axis=2, dtype=np.float64)
        assert np.abs(sums - 1.0).max() <= 1e-3

    def test_header_is_bit_exact(self, model, merge_table, fixture_image, tmp_path):
        path = run_export(model, merge_table, [fixture_image], tmp_path)[0]
        raw = path.read_bytes()
        magic, version, flags, height, width, channels = struct.unpack_from("<4s5I", raw)
        assert magic == b"DAFM"
        assert version == 1
        assert flags == 0
        assert (height, width, channels) == (48, 64, 4)
        assert len(raw) == 24 + height * width * channels * 4

    def test_value_roundtrip_within_tolerance(self, model, merge_table, fixture_image, tmp_path):
        values = compute_attribute_map(model, fixture_image, merge_table)
        path = run_export(model, merge_table, [fixture_image], tmp_path)[0]
        loaded = crowdlaf.load_map(path)
        assert loaded.data.shape == values.shape
        assert np.abs(loaded.data.astype(np.float64) - values.astype(np.float64)).max() <= 1e-6

    def test_exported_map_feeds_the_pipeline(self, model, merge_table, fixture_image, tmp_path):
        path = run_export(model, merge_table, [fixture_image], tmp_path)[0]
        amap = crowdlaf.load_map(path)
        descriptors = crowdlaf.extract_descriptors(amap, crowdlaf.GridSpec(4, 4, 2, 2))
        assert descriptors.vectors.shape == (16, 4 * merge_table.channels)
        assert not descriptors.zero_mask.any()


class TestDeterminism:
    def test_back_to_back_exports_are_identical(self, model, merge_table, fixture_image, tmp_path):
        a = run_export(model, merge_table, [fixture_image], tmp_path / "a")[0]
        b = run_export(model, merge_table, [fixture_image], tmp_path / "b")[0]
        assert a.read_bytes() == b.read_bytes()

    def test_inference_size_cap_keeps_output_resolution(self, model, merge_table, fixture_image, tmp_path):
        path = run_export(
            model, merge_table, [fixture_image], tmp_path, inference_size=32
        )[0]
        amap = crowdlaf.load_map(path)
        assert (amap.height, amap.width) == (48, 64)


class TestMergeTable:
    def test_both_arrow_styles_and_comments(self):
        table = parse_merge_table("# person first\n0 -> 0\n1 → 1\n\n2->1\n")
        assert table.channels == 2
        assert table.rules == ((0, 0), (1, 1), (2, 1))

    def test_channel_count_matches_targets(self, model, fixture_image, tmp_path):
        table = parse_merge_table("0 -> 0\n1 -> 1\n2 -> 2\n")
        path = run_export(model, table, [fixture_image], tmp_path)[0]
        assert crowdlaf.load_map(path).channels == 3

    def test_dropped_classes_still_renormalize(self, model, fixture_image, tmp_path):
        table = parse_merge_table("0 -> 0\n5 -> 1\n")
        path = run_export(model, table, [fixture_image], tmp_path)[0]
        amap = crowdlaf.load_map(path)
        sums = amap.data.sum(axis=2, dtype=np.float64)
        assert np.abs(sums - 1.0).max() <= 1e-3

    @pytest.mark.parametrize(
        "text",
        [
            "",                      # no rules
            "0 -> 0\n1 -> 2\n",      # gap in target channels
            "0 -> 0\n0 -> 0\n",      # duplicate source (resolution-time error below)
            "0 = 0\n",               # bad separator
            "0 -> x\n",              # bad target
        ],
    )
    def test_bad_tables_rejected(self, text, model, fixture_image, tmp_path):
        try:
            table = parse_merge_table(text)
        except MergeTableError:
            return
        with pytest.raises(MergeTableError):
            run_export(model, table, [fixture_image], tmp_path)

    def test_source_index_out_of_range(self, model, fixture_image, tmp_path):
        table = parse_merge_table("0 -> 0\n99 -> 1\n")
        with pytest.raises(MergeTableError):
            run_export(model, table, [fixture_image], tmp_path)

    def test_named_classes_need_model_names(self, model, fixture_image, tmp_path):
        table = parse_merge_table("person -> 0\n0 -> 1\n")
        with pytest.raises(MergeTableError):
            run_export(model, table, [fixture_image], tmp_path)


class TestModelLoading:
    def test_unknown_scheme(self):
        with pytest.raises(ModelLoadFailure):
            load_model("onnx:whatever")

    def test_missing_torchscript_file(self, tmp_path):
        with pytest.raises(ModelLoadFailure):
            load_model(f"torchscript:{tmp_path / 'missing.pt'}")

    def test_unknown_torchvision_name(self):
        with pytest.raises(ModelLoadFailure):
            load_model("torchvision:not_a_model?weights=none")

    def test_random_weight_torchvision_build(self, merge_table, fixture_image, tmp_path):
        # offline-friendly instantiation; 21 VOC-style classes, seeded weights
        model = load_model("torchvision:fcn_resnet50?weights=none")
        table = parse_merge_table("15 -> 0\n0 -> 1\n2 -> 1\n")
        path = run_export(model, table, [fixture_image], tmp_path)[0]
        assert crowdlaf.load_map(path).channels == 2

    def test_missing_image_is_io_failure(self, model, merge_table, tmp_path):
        with pytest.raises(IoFailure):
            run_export(model, merge_table, [tmp_path / "missing.png"], tmp_path)


class TestCli:
    def test_export_subcommand(self, scripted_model_path, fixture_image, tmp_path, capsys):
        classes = tmp_path / "classes.txt"
        classes.write_text("0 -> 0\n1 -> 1\n2 -> 1\n3 -> 2\n4 -> 3\n5 -> 3\n")
        code = main(
            [
                "export",
                "--model", f"torchscript:{scripted_model_path}",
                "--classes", str(classes),
                "--out", str(tmp_path / "maps"),
                str(fixture_image),
            ]
        )
        assert code == 0
        printed = capsys.readouterr().out.strip().splitlines()
        assert len(printed) == 1
        amap = crowdlaf.load_map(printed[0])
        assert amap.channels == 4

    def test_bad_model_exit_code(self, fixture_image, tmp_path):
        classes = tmp_path / "classes.txt"
        classes.write_text("0 -> 0\n")
        code = main(
            ["export", "--model", "bogus:x", "--classes", str(classes),
             "--out", str(tmp_path), str(fixture_image)]
        )
        assert code == 2
