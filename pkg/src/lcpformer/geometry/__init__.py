from lcpformer.geometry.cloud import PointCloud, RegionGrouping  # noqa: F401
