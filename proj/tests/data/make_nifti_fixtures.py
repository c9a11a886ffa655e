"""Regenerates the NIfTI fixtures with nibabel (an independent writer)."""
import pathlib

import nibabel as nib
import numpy as np

here = pathlib.Path(__file__).parent


def save(name, data, zooms, slope=None, inter=0.0):
    img = nib.Nifti1Image(data, np.eye(4))
    img.header.set_zooms(zooms)
    if slope is not None:
        img.header.set_slope_inter(slope, inter)
    nib.save(img, here / name)


# data[x, y, z] = 100x + 10y + z, so each voxel names its own coordinates.
x, y, z = np.meshgrid(np.arange(4), np.arange(4), np.arange(4), indexing="ij")
coords = (100 * x + 10 * y + z).astype(np.int16)
save("ref_int16_4x4x4.nii", coords, (1.5, 2.0, 2.5))

ramp = np.arange(2 * 3 * 5, dtype=np.float32).reshape(2, 3, 5) / 7.0
save("ref_float32_2x3x5.nii", ramp, (1.0, 1.0, 1.0))

small = (np.arange(24, dtype=np.uint8).reshape(2, 3, 4) * 3)
save("ref_uint8_scaled.nii", small, (0.5, 0.5, 0.5), slope=2.0, inter=-1.0)

hdr = nib.Nifti1Header()
hdr.set_data_shape((4, 4, 4))
hdr.set_data_dtype(np.int16)
hdr["scl_slope"] = 0.0  # nibabel refuses 0 through set_slope_inter
hdr["scl_inter"] = 5.0
hdr["vox_offset"] = 352
raw = bytearray(hdr.binaryblock) + b"\0" * 4 + coords.tobytes(order="F")
(here / "ref_int16_slope0.nii").write_bytes(bytes(raw))

save("ref_4d.nii", np.zeros((2, 2, 2, 3), dtype=np.float32), (1.0, 1.0, 1.0, 1.0))
save("ref_float64.nii", np.zeros((2, 2, 2), dtype=np.float64), (1.0, 1.0, 1.0))

# nibabel's own reading of each valid fixture: dims (x y z), zooms, then the
# scaled values with x varying fastest.
for name in ["ref_int16_4x4x4", "ref_float32_2x3x5", "ref_uint8_scaled"]:
    img = nib.load(here / f"{name}.nii")
    values = np.asarray(img.get_fdata(), dtype=np.float64).ravel(order="F")
    with open(here / f"{name}.expected.txt", "w") as f:
        f.write(" ".join(str(d) for d in img.shape) + "\n")
        f.write(" ".join(repr(float(z)) for z in img.header.get_zooms()) + "\n")
        f.write(" ".join(repr(float(v)) for v in values) + "\n")
