"""Stage orchestration with cached, resumable run manifests"""
